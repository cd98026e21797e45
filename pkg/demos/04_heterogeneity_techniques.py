# %% [markdown]
# # Training on one phone, testing on another
#
# The slave phone below applies a gain, an offset and a fixed per-tower
# error. Each technique tries to undo that mismatch; `none` is the baseline.
# Small sizes keep this under a minute; the `matrix` command runs the full
# four-experiment grid.

# %%
from hetloc.harness import (ExperimentSpec, TECHNIQUES, run_matrix, same_device_spec,
                            summarize)
from hetloc.netcore import MlpConfig
from hetloc.worldgen import DeviceProfile, WorldConfig

world = WorldConfig(area=(600.0, 500.0), tower_count=16, path_loss_exponent=3.3, seed=4)
master = DeviceProfile("C", seed=13)
slave = DeviceProfile("D", gain=1.25, offset_db=12.0, per_tower_jitter_db=4.0, seed=14)
config = MlpConfig(layer_sizes=(1, 128, 64, 1), epochs=30, seed=4)

specs = [ExperimentSpec("demo", t, master, slave, world, config=config, seed=4,
                        train_per_cell=30, calib_per_cell=20, test_per_cell=15,
                        fine_tune_epochs=30)
         for t in TECHNIQUES]
specs.append(same_device_spec(specs[0]))
result = run_matrix(specs)

# %%
for r in result.reports:
    label = "same device" if r.spec.name.endswith("-same") else r.spec.technique
    print(f"{label:>12}: p25 {r.p25:6.1f}  p50 {r.p50:6.1f}  p75 {r.p75:6.1f} m")

# %% [markdown]
# The summary pairs the headline technique with the unhandled baseline and
# reports how much worse the baseline is, in percent.

# %%
for row in summarize(result.reports):
    print(row)
