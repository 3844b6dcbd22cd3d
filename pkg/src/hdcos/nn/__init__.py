from .io import load_model, load_model_share, save_model, share_model, unflatten_shares
from .model import (ACTIVATIONS, STRUCTURES, LayerSpec, ModelSpec, ParamStore, backward, forward_plain,
                    init_model, loss_softmax_ce, param_layout, predict)
from .train import TrainCfg, evaluate, sweep, train

__all__ = [
    "ACTIVATIONS", "STRUCTURES", "LayerSpec", "ModelSpec", "ParamStore", "TrainCfg", "backward",
    "evaluate", "forward_plain", "init_model", "load_model", "load_model_share", "loss_softmax_ce",
    "param_layout", "predict", "save_model", "share_model", "sweep", "train", "unflatten_shares",
]
