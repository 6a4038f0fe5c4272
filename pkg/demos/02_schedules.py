"""Plot (in ASCII) the curriculum schedules that drive training.

The branch weight moves the loss from the coarse branch to the fine branch
between k1 and k2 and then plateaus at beta1; the head-predicate weight
decays from k1 to the end of training and is floored at beta2. Three
schedule shapes are available; only the interpolation region differs.
"""

from dualrel import ScheduleConfig, branch_weight, head_predicate_weight, schedule_value

cfg = ScheduleConfig(k1=1000, k2=2000, total_iterations=4000)

WIDTH = 60


def trace(fn, ks):
    row = ""
    for k in ks:
        value = fn(k)
        row += " .:-=+*#"[min(7, int(value * 8))]
    return row


ks = [int(round(k)) for k in
      [cfg.total_iterations * i / WIDTH for i in range(1, WIDTH + 1)]]

print(f"iterations 1..{cfg.total_iterations}, k1={cfg.k1}, k2={cfg.k2}")
print(f"branch weight (1 until k1, descends to beta1={cfg.beta1}):")
print("  " + trace(lambda k: branch_weight(k, cfg), ks))
print(f"head-predicate weight (1 until k1, descends to beta2={cfg.beta2}):")
print("  " + trace(lambda k: head_predicate_weight(k, True, cfg), ks))
print("tail-predicate weight (always 1):")
print("  " + trace(lambda k: head_predicate_weight(k, False, cfg), ks))

print("\nschedule shapes over a unit horizon:")
for kind in ("linear", "exponential", "parabolic"):
    values = [schedule_value(kind, t / WIDTH, 1.0, nu=0.01) for t in range(WIDTH + 1)]
    row = "".join(" .:-=+*#"[min(7, int(v * 8))] for v in values)
    print(f"  {kind:12s} {row}")

print("\nspot values with the reference constants (k1=10000, k2=20000, K=40000):")
ref = ScheduleConfig(k1=10_000, k2=20_000, total_iterations=40_000)
for k in (5_000, 15_000, 25_000):
    print(f"  branch weight at k={k:6d}: {branch_weight(k, ref):.2f}")
for k in (25_000, 40_000):
    print(f"  head weight   at k={k:6d}: {head_predicate_weight(k, True, ref):.2f}")
