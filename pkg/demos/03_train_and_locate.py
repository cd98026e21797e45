# %% [markdown]
# # Fingerprint localization with a small MLP
#
# Every grid cell is a class; the network outputs a probability per cell and
# the location estimate is the center of the most likely cell (or the
# probability-weighted center of mass).

# %%
import numpy as np

from hetloc.netcore import (MlpConfig, init_model, predict_locations, save_model,
                            load_model, train)
from hetloc.worldgen import DeviceProfile, WorldConfig, generate_dataset, generate_world

world = generate_world(WorldConfig(seed=3))
phone = DeviceProfile("phone", seed=7)
train_set = generate_dataset(world, phone, samples_per_cell=40, seed=1)
test_set = generate_dataset(world, phone, samples_per_cell=10, seed=2)

config = MlpConfig(layer_sizes=(world.inventory.M, 128, 64, world.grid.K), epochs=40, seed=0)
model = init_model(config)
model.fit_input_scaling(train_set.X)
losses = train(model, train_set)
print(f"loss {losses[0]:.3f} -> {losses[-1]:.3f} over {len(losses)} epochs")

# %%
for strategy in ("argmax", "center_of_mass"):
    pred = predict_locations(model, test_set.X, "default", world.grid, strategy)
    err = np.hypot(*(pred - test_set.positions).T)
    print(f"{strategy:>15}: median error {np.median(err):.1f} m")

# %% [markdown]
# Models save to a plain JSON file and reload bit for bit.

# %%
import os
import tempfile

path = os.path.join(tempfile.mkdtemp(), "model.json")
save_model(model, path)
again = load_model(path)
same = np.array_equal(predict_locations(model, test_set.X, "default", world.grid),
                      predict_locations(again, test_set.X, "default", world.grid))
print("reloaded model predicts identically:", same)
