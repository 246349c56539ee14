# coding: utf-8

# # Class weights and the lambda parameterization
#
# A masked node falls in one of three classes: its edges were masked (E),
# its features were masked (F), or both (B).  Each class gets one weight per
# target subset {1}, {2}, {1,2}.  The weights are easier to reason about as
# the coefficients of three information terms, and the two views are
# linked by an invertible linear map.

# %%

import numpy as np

from gigamae import DEFAULT_CLASS_WEIGHTS, inverse_lambda_transform, lambda_transform

for cls in "EFB":
    weights = getattr(DEFAULT_CLASS_WEIGHTS, cls)
    print(cls, "subset weights", weights, "<- information coefficients", inverse_lambda_transform(*weights))

# %% [markdown]
# Equal coefficients on the two single-target terms and a doubled joint
# term give weights (1, 1, 0): the concatenated target drops out.

# %%

print(lambda_transform(1, 1, 2))

# %% [markdown]
# ## How the weights move the objective
#
# The loss is linear in the weights.  The breakdown shows where the
# objective comes from for one mask draw.

# %%

from gigamae import ClassWeights, TrainConfig, loss_on_plan, init_model, planted_partition_graph, sample_masks
from gigamae import pca_embed

graph = planted_partition_graph(num_nodes=120, num_classes=3, feature_dim=40, avg_degree=4, seed=3)
rng = np.random.default_rng(0)
targets = [pca_embed(graph.features).data, rng.normal(size=(graph.num_nodes, 8))]
model = init_model(graph.feature_dim, 32, 32, [t.shape[1] for t in targets], heads=4, seed=0)
plan = sample_masks(graph, 0.4, 0.4, seed=1)
print("classes N/E/F/B:", np.bincount(plan.node_class, minlength=4))

for label, weights in [("default", DEFAULT_CLASS_WEIGHTS), ("uniform", ClassWeights.uniform(3))]:
    br = loss_on_plan(model, graph, targets, plan, TrainConfig(class_weights=weights))
    print(f"{label:<8} total {br.total:.3f}")
    print("         ", br.to_kv())
