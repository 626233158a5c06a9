# Event-driven traffic: events appear at random epicentres and wake up every
# device within a threshold distance, on top of each device's own Bernoulli arrivals.

from scipy import stats

from marl_access.config import get_preset
from marl_access.experiments import event_activation_counts, event_members
from marl_access.traffic import layout

cfg = get_preset("corr-traffic").runs["ebar0.07"]
lay = layout(cfg.layout_seed, cfg.num_devices, cfg.num_events, cfg.d_th)
print(lay.to_text())  # devices numbered from 1 in the text format
print("devices covered by at least one event:", event_members(cfg).tolist())

# Activation counts over 10 000 slots against the exact binomial 99% interval.
for rate in (0.02, 0.05, 0.07):
    counts = event_activation_counts(cfg.with_updates(event_rate=rate, arrival_rate=0.0), 10_000)
    lo, hi = stats.binom.interval(0.99, 10_000, rate / cfg.num_events)
    print(f"event rate {rate}: counts {counts.tolist()}, 99% interval [{lo:.0f}, {hi:.0f}]")
