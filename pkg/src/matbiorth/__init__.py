"""Matrix biorthogonal polynomials: factorization, spectral transformations and Toda flows."""
