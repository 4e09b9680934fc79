"""Config files, seeded runs, metrics, and plot data, without the command line."""

import tempfile
from pathlib import Path

from hiro.experiment import dump_config, expand_sweep, export_plot_data, parse_config, run_experiment

base = parse_config("""
[experiment]
env = maze
[hiro]
total_steps = 2000
eval_every = 1000
eval_episodes = 2
[td3]
hidden = 32,32
batch_size = 64
""")
print(dump_config(base))

out = Path(tempfile.mkdtemp())
runs = expand_sweep(base, ["hiro", "no_correction"], [0, 1], out)
for cfg in runs:
    status = run_experiment(cfg)
    print(cfg.out_dir, "status", status)

print(export_plot_data([cfg.out_dir for cfg in runs]))
print("metrics of the first run:")
print((Path(runs[0].out_dir) / "metrics.jsonl").read_text())
