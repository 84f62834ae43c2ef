"""Worst and best case failure probability under a mean constraint."""
from selfpowered.ouq import AdmissibleSet, BoundedInput, ProductMeasure, failure_probability, \
    ouq_lower_bound, ouq_upper_bound

# Demand equal to an input on [0, 2]; failure when it exceeds 1, mean demand at most 1.
adm = AdmissibleSet([BoundedInput("x", 0.0, 2.0, support_points=2)], lambda p: p[0], mean_constraint=1.0)

# Endpoint atoms cap the failure mass at one half...
half = ProductMeasure((((0.0, 2.0), (0.5, 0.5)),))
print("atoms {0, 2}:", failure_probability(half, adm))

# ...but atoms just above 1 carry almost all of the mass.
for h in (0.5, 0.1, 0.01):
    mu = ProductMeasure((((0.0, 1 + h), (h / (1 + h), 1 / (1 + h))),))
    est = failure_probability(mu, adm)
    print(f"atom at {1 + h}: probability {est.probability:.4f} mean {est.mean:.4f}")

up, lo = ouq_upper_bound(adm), ouq_lower_bound(adm)
print("\n".join(lo.report(adm.inputs) + up.report(adm.inputs)))

# Two inputs: demand grows with the first and falls with the second.
adm2 = AdmissibleSet([BoundedInput("load", 0, 1), BoundedInput("sun", 0, 1)],
                     lambda p: 0.4 + 1.2 * p[0] - 0.5 * p[1])
up2 = ouq_upper_bound(adm2, starts=8, sweeps=8)
print("two inputs: U =", round(up2.value, 4), "mean", round(up2.mean, 4))
print("\n".join(up2.witness.describe(adm2.inputs)))
