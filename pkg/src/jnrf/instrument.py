"""Global multiply counter used by the benchmark harness.

Counts scalar multiplications performed by the two expensive primitive
families: matrix products (m*k*p multiply-accumulates) and FFT butterflies
(4 real multiplies per complex twiddle product). Elementwise work is not
counted; complexity claims are about these two families.
"""


class MulCounter:
    def __init__(self):
        self.total = 0

    def add(self, n: int):
        self.total += int(n)

    def reset(self):
        self.total = 0

    def snapshot(self) -> int:
        return self.total


COUNTER = MulCounter()
