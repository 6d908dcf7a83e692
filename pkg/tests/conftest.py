import os

# the acceptance runs are specified for a single CPU core; the matrices
# are too small for BLAS threading to help anyway
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
