"""
Módulo de utilidades y funciones auxiliares.
"""
