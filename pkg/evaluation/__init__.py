# Evaluation package for chain federated learning experiments
