"""Desk-scale neural next-response models with verifiable gradients."""

from .dkt import (
    DktConfig,
    DktModel,
    dkt_forward,
    dkt_grad_check,
    dkt_loss_and_grads,
    dkt_predict_sequence,
    fit_dkt,
    init_dkt_params,
    load_dkt,
    save_dkt,
)
from .encoding import SeqBatch, SkillIndexer, encode_dkt_input, interaction_index, pad_batch
from .gradcheck import central_difference, grad_check, relative_error
from .optim import Adam, clip_global_norm
from .sakt import (
    SaktConfig,
    SaktModel,
    fit_sakt,
    init_sakt_params,
    load_sakt,
    sakt_forward,
    sakt_grad_check,
    sakt_loss_and_grads,
    sakt_predict_sequence,
    save_sakt,
)

__all__ = [
    "Adam",
    "DktConfig",
    "DktModel",
    "SaktConfig",
    "SaktModel",
    "SeqBatch",
    "SkillIndexer",
    "central_difference",
    "clip_global_norm",
    "dkt_forward",
    "dkt_grad_check",
    "dkt_loss_and_grads",
    "dkt_predict_sequence",
    "encode_dkt_input",
    "fit_dkt",
    "fit_sakt",
    "grad_check",
    "init_dkt_params",
    "init_sakt_params",
    "interaction_index",
    "load_dkt",
    "load_sakt",
    "pad_batch",
    "relative_error",
    "sakt_forward",
    "sakt_grad_check",
    "sakt_loss_and_grads",
    "sakt_predict_sequence",
    "save_dkt",
    "save_sakt",
]
