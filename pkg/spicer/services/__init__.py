"""
Serviços numéricos do SPICER: FFT, simulação, operadores, CSMs, baselines, métricas e armazenamento
"""
