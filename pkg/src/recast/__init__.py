"""recast: character replacement pipeline engine.

Replace a prompted character in a clip with a reference character: segment
and track, remove, animate, then composite with lighting harmonization and
edge refinement. Neural stages sit behind a worker protocol; deterministic
stubs make the whole pipeline runnable without any model.
"""

__version__ = "0.1.0"
