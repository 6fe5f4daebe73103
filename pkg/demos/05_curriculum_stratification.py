"""
Curriculum stratification and scheduling
========================================

Entities are sorted by node degree and cut into K strata: stage 1 masks
only the best-connected (easiest) entities, later stages unlock the
long tail through nested cumulative sets G_1 < G_2 < ... < G_K.  A step
schedule maps every training step to its warm-up window or stage.
"""

from melt.curriculum import make_plan, masking_ratio_at

# Degrees as they might come out of the semantic graph.
degrees = {
    "LiCoO2": 9, "TiO2": 8, "BaTiO3": 7, "cathode": 7, "ZnO": 5,
    "anode": 4, "LiFePO4": 3, "electrolyte": 2, "MoS2": 1, "perovskite": 0,
}

plan = make_plan("node-degree", degrees, None, k=3,
                 warmup_steps=1000, stage_steps=1000, total_steps=10_000)
for i, stratum in enumerate(plan.strata, 1):
    print(f"N_{i}: {stratum}")
print("cumulative sizes:", [len(g) for g in plan.cumulative])

# The schedule runs warm-up once, then cycles stage windows until the
# step budget is spent.
print("\nfirst five windows:")
for window in plan.windows[:5]:
    label = window.phase if window.stage is None \
        else f"{window.phase} {window.stage}"
    print(f"  [{window.start:5d}, {window.end:5d}) {label}")
print("total windows:", len(plan.windows))

# universe_at answers the only question the emitter asks: which
# entities may be masked at step t?
for step in (500, 1500, 3500, 9500):
    label, universe = plan.universe_at(step)
    size = "random masking" if universe is None else f"|G|={len(universe)}"
    print(f"step {step:5d}: {label:7s} {size}")

# The masking-ratio baseline ignores entities altogether and ramps the
# random masking rate linearly across training instead.
ramp_plan = make_plan("masking-ratio", degrees, None, k=3,
                      warmup_steps=1000, stage_steps=1000,
                      total_steps=10_000)
print("\nmasking-ratio ramp (one stratum, k collapses to 1):")
for step in (0, 5000, 9999):
    print(f"  step {step:5d}: ratio {masking_ratio_at(step, 10_000, ramp_plan.ratio_ramp):.3f}")
