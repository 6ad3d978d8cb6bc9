# seed of every phantom built by the test-suite
SEED = 42
