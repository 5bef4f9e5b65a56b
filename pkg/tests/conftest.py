import json

from firecast.cli import starter_config
from firecast.synthetic import SyntheticSpec, simulate, write_simulation

SMALL_SPEC = SyntheticSpec(rows=4, cols=4, district_shape=(2, 2), n_months=30)


def write_small_dataset(directory, seed=0, **overrides):
    """A 4x4 lattice over 30 months with a runnable config.json; returns the config path."""
    write_simulation(simulate(SMALL_SPEC, seed), directory)
    cfg = starter_config(SMALL_SPEC, test_months=6)
    cfg["features"] = {"window": 6, "lags": [1, 2], "ma_spans": [3, 6], "hist_spans": [], "levels": ["conc", "dist"]}
    tree = {"n_trees": 20, "max_depth": 2, "learning_rate": 0.2}
    cfg["stage1"] = {"n_folds": 3, "grid_C": [dict(tree, loss="poisson")], "grid_B": [dict(tree, loss="tweedie")]}
    cfg["stage2"]["n_samples"] = 200
    cfg.update(overrides)
    path = directory / "config.json"
    path.write_text(json.dumps(cfg, indent=1))
    return path


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
