"""Core engine: graph model, absorbing-walk solvers, rewiring search and metrics"""
