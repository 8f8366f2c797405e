"""Small builders shared by the test modules."""

import numpy as np

from vflsim import nn
from vflsim.data import Standardizer
from vflsim.encoding import AutoEncoder
from vflsim.estimation import RenModel
from vflsim.federation import PartyA, PartyB
from vflsim.paillier import make_backend


def identity_ae(dim: int) -> AutoEncoder:
    enc = nn.Mlp([nn.Layer(np.eye(dim), np.zeros(dim), "identity")])
    dec = nn.Mlp([nn.Layer(np.eye(dim), np.zeros(dim), "identity")])
    return AutoEncoder(enc, dec)


def identity_scaler(dim: int) -> Standardizer:
    s = Standardizer()
    s.mean_, s.scale_ = np.zeros(dim), np.ones(dim)
    return s


def linear_parties(n=64, d=4, he_mode="mock", seed=0, hidden=(6,), modulus_bits=512):
    """Parties whose codes are their raw features and ``r_B = r_A @ M``."""
    rng = np.random.default_rng(seed)
    x_a = rng.normal(size=(n, d))
    x_b = x_a @ (rng.normal(size=(d, d)) / np.sqrt(d))
    he = make_backend(he_mode, modulus_bits, seed=seed)
    a = PartyA(x_a, rng.integers(2, size=n), he.public_key, he.frac_bits)
    b = PartyB(he)
    ids = np.arange(n)
    b.receive_rows(ids, x_b)
    a.use_encoder(identity_ae(d))
    b.use_encoder(identity_ae(d), identity_scaler(d))
    a.set_overlap(ids)
    a.ren = RenModel.build(d, d, rng, hidden)
    return a, b
