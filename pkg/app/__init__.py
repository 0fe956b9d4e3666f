# Chain federated learning robustness simulator
