"""Desk-scale configurations for every experiment (used when no --config is given)."""
from __future__ import annotations

import copy

import numpy as np

SIX_SHELLS = [0.03, 0.06, 0.12, 0.24, 0.48, 0.96]
# dense low shells put states of F(lambda) inside Delta_sigma at sigma = 0.2
INFRARED_DESK = [round(float(r), 6) for r in np.linspace(0.010, 0.030, 11)] + [0.06, 0.12, 0.3, 0.6, 0.9]

PRESETS = {
    "spectrum": {
        "grid": {"linspace": [0.1, 1.0, 10], "directions": "pm_x"},
        "model": {"alpha": 0.0, "n_max": 2},
        "options": {"P_scan": {"direction": [1, 0, 0],
                               "values": [round(0.1 * i, 2) for i in range(16)]}},
    },
    "prop31": {
        "grid": {"radii": SIX_SHELLS, "directions": "tetrahedron"},
        "model": {"P": [0.02, 0, 0], "alpha": 1e-4, "Lam": 1.0, "sigma": [0.1, 0.2, 0.4],
                  "n_max": 2, "n_high": 2, "n_low": 1},
    },
    "feshbach-check": {
        "grid": {"radii": SIX_SHELLS, "directions": "tetrahedron"},
        "model": {"P": [0.02, 0, 0], "alpha": 1e-4, "Lam": 1.0, "sigma": [0.1, 0.2, 0.4],
                  "n_max": 2, "n_high": 1, "n_low": 1},
        "options": {"trials": 200, "max_dim": 12, "alphas": [1e-4, 4e-4, 1.6e-3]},
        "seed": 42,
    },
    "mourre": {
        "grid": {"radii": INFRARED_DESK, "directions": "tetrahedron"},
        "model": {"P": [0.02, 0, 0], "alpha": 1e-4, "Lam": 1.0, "sigma": 0.2,
                  "n_max": 1, "n_high": 1, "n_low": 1},
        "options": {"alphas": [0.0, 1e-4], "mourre_sigma": 0.5, "n_lambdas": 3},
    },
    "lemma-suite": {
        "grid": {"radii": INFRARED_DESK, "directions": "tetrahedron"},
        "model": {"P": [0.02, 0, 0], "alpha": 1e-4, "Lam": 1.0, "sigma": 0.2,
                  "n_max": 1, "n_high": 1, "n_low": 1},
        "options": {"alphas": [1e-4, 4e-4, 1.6e-3]},
    },
    "lap-sweep": {
        "grid": {"linspace": [0.05, 1.0, 256], "directions": "x"},
        "model": {"alpha": 0.0, "Lam": 2.0, "n_max": 1},
        "options": {"J": [0.02, 1.2], "n_lambdas": 5, "s": 1.0,
                    "eps": [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 5e-4, 2e-4, 1e-4],
                    "holder": True, "s_list": [0.75, 1.0], "holder_center": 0.625,
                    "holder_eps": 1e-4},
    },
    "local-decay": {
        "grid": {"linspace": [0.05, 1.0, 512], "directions": "x"},
        "model": {"alpha": 0.0, "Lam": 2.0, "n_max": 1},
        "options": {"s": 1.0, "state": {"center": 0.5, "width": 0.2}},
    },
    "transfer-check": {
        "grid": {"radii": SIX_SHELLS, "directions": "tetrahedron"},
        "model": {"P": [0.02, 0, 0], "alpha": 1e-4, "Lam": 1.0, "sigma": 0.2,
                  "n_max": 2, "n_high": 1, "n_low": 1},
        "options": {"eps": [1e-3], "n_lambdas": 3, "s": 1.0},
    },
    "nelson": {
        "grid": {"geomspace": [0.05, 1.0, 6], "directions": "axes"},
        "model": {"Lam": 1.0, "n_max": 2},
        "options": {"H_el": [[0.0, 0.3], [0.3, 1.0]], "mu": [0.0, 0.25],
                    "g_values": [0.0, 0.01, 0.02, 0.04, 0.08]},
    },
}


def preset(name: str) -> dict:
    cfg = copy.deepcopy(PRESETS[name])
    cfg["experiment"] = name
    return cfg
