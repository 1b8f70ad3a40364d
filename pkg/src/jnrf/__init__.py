"""Joint NER + relation extraction with Fourier token mixing.

Pure-numpy implementation: a small reverse-mode autodiff tape, a radix-2
FFT kernel, pluggable token mixers (Fourier / token-wise MLP / windowed
attention), selective pooling with a trainable polynomial distance bias,
and a full train / predict / evaluate / benchmark toolchain over BRAT
standoff corpora.
"""

__version__ = "0.1.0"
