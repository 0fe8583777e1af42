# tests for the smt pipeline modules
