"""
Lógica de entrenamiento, muestreo, pérdidas e inferencia.
"""
