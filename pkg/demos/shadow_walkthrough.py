"""Follow one file while two of its three fragments are rewritten.

The writer sees its own change at once. Readers keep the old version until
every new fragment has reached the backend, then switch in one step. Old
copies linger until a later sync happens to pick their pair.
"""

from dripfs.harness.scenarios import shadow_example

header = ("step", "buffer", "backend", "writer view", "reader view")
rows = [header] + [r.cells() for r in shadow_example()]
widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
for r in rows:
    print("  ".join(c.ljust(w) for c, w in zip(r, widths)))
