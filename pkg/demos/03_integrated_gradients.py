"""
Integrated gradients on the embedding layer
===========================================

Attributions sum (up to quadrature error) to the change in the target
logit between the input and a baseline of pad embeddings. On a linear
model the sum is exact for any number of steps.
"""

import numpy as np

from attrlex.attribution import (
    EncoderClassifier,
    IgConfig,
    LinearTokenModel,
    completeness_tolerance,
    integrated_gradients_embedding,
)
from attrlex.model import ModelConfig, ModelParams

# A linear model: logit = sum_p e_p . w. One step is already exact.
linear = LinearTokenModel(np.array([[3.0, 4.0]]), np.array([[1.0], [2.0]]))
res = integrated_gradients_embedding(linear, [0], 0, IgConfig(steps=1, baseline="zero"))
print("linear model attribution:", res.scores, "= F(x) - F(0) =", res.f_input - res.f_baseline)

# The transformer is not linear; the residual shrinks as the step count grows.
rng = np.random.default_rng(0)
params = ModelParams.init(ModelConfig(50, 16, 32, 4), seed=0)
for _, arr in params.items():
    arr += rng.normal(0, 0.3, size=arr.shape)
model = EncoderClassifier(params, pad_id=49)
ids = [3, 14, 15, 9, 26, 5, 49, 49]

for steps in (1, 8, 64, 256):
    for rule in ("right", "midpoint"):
        r = integrated_gradients_embedding(model, ids, 2, IgConfig(steps=steps, rule=rule))
        print(f"m={steps:3d} {rule:8s} residual {r.residual:.2e} (tolerance {completeness_tolerance(r):.2e})")

# pad positions match the baseline exactly, so they get zero attribution
print("scores:", np.round(r.scores, 4))
