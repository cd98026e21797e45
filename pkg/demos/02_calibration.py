# %% [markdown]
# # Per-tower linear calibration
#
# Walk both phones along the same route at the same time, pair their scans by
# timestamp, and fit `master = a * slave + b` for every tower.

# %%
import numpy as np

from hetloc.features import apply_linear_map, fit_linear_map, pair_scans, vectorize_scans
from hetloc.worldgen import DeviceProfile, WorldConfig, generate_scans, generate_world

world = generate_world(WorldConfig(seed=2))
master = DeviceProfile("master", noise_sigma_db=0.5, seed=1)
slave = DeviceProfile("slave", gain=1.2, offset_db=8.0, noise_sigma_db=0.5, seed=2)

route_m = generate_scans(world, master, samples_per_cell=20, seed=5)
route_s = generate_scans(world, slave, samples_per_cell=20, seed=5)
pairs = pair_scans(route_m, route_s, window=2.0)
print(f"{len(pairs)} co-timed pairs out of {len(route_s)} slave scans")

# %%
Xm, _ = vectorize_scans([m for m, _ in pairs], world.inventory)
Xs, _ = vectorize_scans([s for _, s in pairs], world.inventory)
lmap = fit_linear_map(Xm, Xs)
print("towers fitted:", int(lmap.fitted.sum()), "of", lmap.M)
print("slopes    ~ 1/1.2 =", np.round(lmap.slopes[lmap.fitted][:5], 3))
print("intercept ~ -8/1.2 =", np.round(lmap.intercepts[lmap.fitted][:5], 2))

# %% [markdown]
# After mapping, slave readings land close to what the master would report.

# %%
mapped = apply_linear_map(lmap, Xs)
co = (Xm != 0) & (Xs != 0)
print("mean |master - slave| before:", round(float(np.abs(Xm - Xs)[co].mean()), 2), "dB")
print("mean |master - mapped| after:", round(float(np.abs(Xm - mapped)[co].mean()), 2), "dB")
