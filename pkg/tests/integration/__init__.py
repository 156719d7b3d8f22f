"""Integration tests for stagfv.

Full convergence studies over several refinement levels; each test takes
seconds to a minute.

Run with: pytest tests/integration -m integration
"""
