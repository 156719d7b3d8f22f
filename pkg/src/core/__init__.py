"""Core numerics: meshes, operators, schemes and the convergence harness."""
