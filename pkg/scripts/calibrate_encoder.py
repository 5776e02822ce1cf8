"""Recompute the enc-v1 z-normalization constants from a reference dataset.

Prints _MU/_SIGMA literals to paste into encoder.py. Run whenever the raw
feature recipe changes (which requires bumping the recipe version).
"""
import numpy as np
from protoforge import datagen as dg
from protoforge import encoder as enc

cfg = dg.DataConfig(train_samples=120, test_samples=0, seed=1234)
m = dg.generate_dataset(cfg, "/tmp/calib_ds")
rows = []
for e in m.split("train"):
    s = dg.load_sample(m.root / e.path)
    c = enc.EncoderConfig()
    gh, gw = s.rgb.shape[0] // c.cell, s.rgb.shape[1] // c.cell
    rgb = s.rgb.astype(np.float64); fl = s.flows.astype(np.float64)
    for i in range(gh):
        for j in range(gw):
            y0, y1 = i*c.cell, (i+1)*c.cell; x0, x1 = j*c.cell, (j+1)*c.cell
            rows.append(enc.raw_cell_features(rgb[y0:y1, x0:x1], fl[:, y0:y1, x0:x1]))
X = np.array(rows)
mu = X.mean(0)
sigma = np.maximum(X.std(0), 1e-3)
def fmt(a):
    vals = ", ".join(f"{v:.6g}" for v in a)
    return f"np.array([{vals}])"
print("_MU =", fmt(mu))
print("_SIGMA =", fmt(sigma))
