import os
import sys

# Keep kernel math single-threaded for bit-reproducible results (matches the
# CLI default of CAPTALK_THREADS=1).
os.environ.setdefault("CAPTALK_THREADS", "1")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, os.environ["CAPTALK_THREADS"])

sys.path.insert(0, os.path.dirname(__file__))
