# %% [markdown]
# # Window size versus number of flagged windows
#
# Shorter windows localise an episode more finely but there are many more of
# them to transform. Here the same synthetic recording is swept over the six
# standard sizes, next to the counts reported for the original field data
# (which are not reproducible here; the dataset is not public).

# %%
from gapewatch.detector import DetectorConfig, window_size_sweep
from gapewatch.synth import BurstSpec, SynthSpec, generate

series, _ = generate(SynthSpec(seed=3, duration_s=7200,
                               bursts=(BurstSpec(1800, 1800, 0.9, 0.08, 0.9),)))

rows = window_size_sweep(series, config=DetectorConfig())
print(f"{'size':>6} {'windows':>8} {'flagged':>8} {'field':>6} {'runtime':>9}")
for r in rows:
    print(f"{r.size:6d} {r.window_count:8d} {r.spawning_count:8d} {r.reference_count:6d} {r.runtime_s:8.3f}s")

# %% [markdown]
# Sizes below 100 samples are refused outright.

# %%
try:
    window_size_sweep(series, [50])
except ValueError as exc:
    print("rejected:", exc)
