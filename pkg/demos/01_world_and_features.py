# %% [markdown]
# # A synthetic cellular world
#
# Towers sit at random spots over a 500 m x 400 m area split into 100 m cells.
# A phone hears at most seven towers per scan; everything it did not hear is
# zero in the fingerprint vector.

# %%
import numpy as np

from hetloc.features import pair_index, power_difference, power_ratio, vectorize_scans
from hetloc.worldgen import DeviceProfile, WorldConfig, generate_scans, generate_world

world = generate_world(WorldConfig(seed=1))
print(f"{world.inventory.M} towers, {world.grid.K} cells of {world.grid.cell_size:.0f} m")

# %% [markdown]
# Two phones: a reference one and one that reads everything 10 dB hotter.

# %%
ref = DeviceProfile("ref", seed=1)
hot = DeviceProfile("hot", offset_db=10.0, seed=1)
scans_ref = generate_scans(world, ref, samples_per_cell=2, seed=3)
scans_hot = generate_scans(world, hot, samples_per_cell=2, seed=3)
print(scans_ref[0])
print(scans_hot[0])

# %% [markdown]
# Raw vectors differ by the offset on every heard tower. The pairwise
# difference cancels it, so both phones produce (nearly) the same features.

# %%
X_ref, _ = vectorize_scans(scans_ref, world.inventory)
X_hot, _ = vectorize_scans(scans_hot, world.inventory)
heard = (X_ref != 0) & (X_hot != 0)
print("raw gap on co-heard towers:", np.round((X_hot - X_ref)[heard][:5], 3))

D_ref, D_hot = power_difference(X_ref), power_difference(X_hot)
both = (D_ref != 0) & (D_hot != 0)
print("difference-feature gap:", float(np.abs(D_ref - D_hot)[both].max()))
print("ratio features per scan:", power_ratio(X_ref).shape[1],
      "(pair (0, 1) sits at column", pair_index(0, 1, world.inventory.M), ")")
