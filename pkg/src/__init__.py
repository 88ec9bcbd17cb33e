"""
segadapt: segmentación semántica con adaptación y generalización de dominio.
"""
