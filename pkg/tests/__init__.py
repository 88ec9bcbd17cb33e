"""
Tests de segadapt.
"""
