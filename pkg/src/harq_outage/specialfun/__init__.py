"""Special-function kernels: gamma family, hypergeometric series, Mellin-Barnes integrals."""
