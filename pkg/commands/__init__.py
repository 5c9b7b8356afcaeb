"""
Command package initialization.
Each module exposes register(subparsers) and thin handlers taking a RunConfig.
"""
