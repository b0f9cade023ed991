"""Training, evaluation, ablation, benchmarking, and the command line."""
