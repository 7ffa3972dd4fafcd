import copy
import math

C = 0.05 / math.sqrt(2.0)

MINI = {
    "name": "mini",
    "domain": {"lx": 2.0, "ly": 2.0},
    "fractures": [{"points": [[1 - C, 1 - C], [1 + C, 1 + C]], "tip_ids": ["B", "A"]}],
    "material": {"E": 40e9, "nu": 0.2, "alpha": 0.8, "phi": 0.01, "c_p": 4e-10, "perm": 5e-20, "mu": 1e-4},
    "fracture_props": {"a0": 1e-3, "mu_s": 0.5, "psi_deg": 1.0, "dilation_in_aperture": True},
    "boundary": {
        "left": {"kind": "roller"},
        "right": {"kind": "traction", "normal": -20e6},
        "bottom": {"kind": "roller"},
        "top": {"kind": "traction", "normal": -10e6},
    },
    "probes": {"C": [1.5, 1.5], "D": [2.0, 2.0]},
    "injection": [{"fracture": 0, "rate": 5e-9, "start_h": 0, "end_h": 21}],
    "numerics": {"dH": 0.05, "dt_h": 1.0, "l": 0.5, "h_max": 0.2, "grade": 0.25, "fine_radius": 0.05},
    "stop": {"t_end_h": 3},
}


def mini_config(**sections):
    """Coarse single-fracture scenario; keyword arguments replace or update top-level sections."""
    d = copy.deepcopy(MINI)
    for k, v in sections.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k].update(v)
        else:
            d[k] = v
    return d
