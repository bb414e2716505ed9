"""Block-CSR inference kernels and the speedup benchmark."""

from .bench import BenchRow, bench_speedup, check_advisory, rows_to_csv
from .bsr import (
    BlockCsrMatrix,
    bsr_matvec,
    from_masked_dense,
    masked_dense_matvec,
    set_kernel_threads,
)

__all__ = [
    "BenchRow",
    "bench_speedup",
    "check_advisory",
    "rows_to_csv",
    "BlockCsrMatrix",
    "bsr_matvec",
    "from_masked_dense",
    "masked_dense_matvec",
    "set_kernel_threads",
]
