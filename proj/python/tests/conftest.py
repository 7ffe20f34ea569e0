import os
import sys

# Under ctest, import the module staged in the build tree even when an
# editable install is present (its import hook would otherwise win).
_stage = os.environ.get("NPPO_STAGE")
if _stage:
    sys.meta_path[:] = [f for f in sys.meta_path if "ScikitBuild" not in type(f).__name__]
    sys.path.insert(0, _stage)
