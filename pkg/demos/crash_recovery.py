"""Kill the writer at random points of the sync cycle and remount.

Whatever the crash point, a reader finds every listed file either at some
version that was really written or not yet available; never a mix.
"""

from collections import Counter

from dripfs.harness.faults import crash_campaign

outcomes = crash_campaign(40, seed=3)
by_stage = Counter(o.stage for o in outcomes)
print("crashes per stage:", dict(by_stage))
print("files checked after remount:", sum(o.published for o in outcomes))
print("names listed ahead of their data:", sum(o.dangling for o in outcomes))
print("inconsistent remounts:", sum(not o.ok for o in outcomes))
