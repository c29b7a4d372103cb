# %% [markdown]
# # Replacing the fiber with a conditional GAN
#
# Build a small 10 km dataset, train a CGAN and an FCNN for a handful of
# epochs, and compare what they generate with the split-step output.
# The epoch count here is tiny so the script finishes in a few minutes;
# the acceptance suite trains for 60 epochs at batch 256 on 40000 pairs.

# %%
import numpy as np

from fibergan import harness
from fibergan.fiber import FiberParams, NoiseConfig
from fibergan.rxdsp import DspMode
from fibergan.sigproc import TxConfig
from fibergan.surrogate import CganConfig, WindowGeometry, build_conditions, sample_outputs, train_cgan, train_fcnn

tx_cfg = TxConfig(launch_power_dbm=10.0)
link = FiberParams(length_km=10)
noise = NoiseConfig(snr_db=26, seed=7)

train = harness.generate_dataset(tx_cfg, link, noise, n_symbols=8 * 1024, seed=3)
test = harness.generate_dataset(tx_cfg, link, noise, n_symbols=2 * 1024, seed=4)
cond, targ = harness.training_pairs(train, WindowGeometry())
print("training pairs:", cond.shape, "->", targ.shape)   # (n, 168) -> (n, 8)

# %%
cfg = CganConfig(epochs=5, seed=1)
cgan = train_cgan(cond, targ, cfg)
fcnn = train_fcnn(cond, targ, cfg)
print("CGAN d/g loss per epoch:\n", cgan.losses.round(3))
print("FCNN mse per epoch:", fcnn.losses.ravel().round(5))

# %% [markdown]
# ## Stochastic vs deterministic
# Same condition, several noise draws: the CGAN output moves, the FCNN
# output does not.

# %%
c = build_conditions(test.tx[0], [100], WindowGeometry())
draws_cgan = np.stack([sample_outputs(cgan.model, c, seed=k) for k in range(50)])
draws_fcnn = np.stack([sample_outputs(fcnn.model, c, seed=k) for k in range(50)])
print("CGAN spread:", draws_cgan.std(axis=0).mean())
print("FCNN spread:", draws_fcnn.std(axis=0).mean())

# %% [markdown]
# ## Same receiver, both channels

# %%
generated = harness.surrogate_dataset(cgan.model, test, seed=5)
for mode in ("none", "cd_only"):
    row = harness.evaluate_pair(test, generated, DspMode(mode))
    print(f"{mode:8s} ssfm BER {row.ber_ssfm:.3e}  cgan BER {row.ber_surrogate:.3e}  delta {row.delta_ber:+.3e}")

# %% [markdown]
# Constellations can be written out for plotting elsewhere:
# `harness.export_constellation_grid(test, [generated], "constellations/")`
# writes one CSV per (source, DSP stage).
