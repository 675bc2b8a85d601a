import numpy as np


def heuristics(distance_matrix):
    n = distance_matrix.shape[0]
    avg_distance_global = float(np.mean(distance_matrix))
    mst_edges = minimum_spanning_edges(distance_matrix)
    if mst_edges:
        # Calculate adaptive bonus based on average distance (similar to parent solution)
        mst_bonus = 0.5 * (1.0 + 1.0 / (1.0 + avg_distance_global))
        
        # Also incorporate problem size factor to enhance performance on larger instances
        if n > 500:
            mst_bonus *= 1.2  # Slight enhancement for large problems
        elif n < 200:
            mst_bonus *= 0.8  # Slight reduction for small problems
        for i, j in mst_edges:
            prior[i, j] += mst_bonus
    return prior
