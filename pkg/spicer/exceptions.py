"""
spicer/exceptions.py
Hierarquia de erros do SPICER
"""

# =================== Base ===================

class SpicerError(Exception):
    """Erro base de todo o pacote"""


# =================== Configuração e forma ===================

class ConfigError(SpicerError, ValueError):
    """Configuração inválida ou fora dos limites"""


class ShapeError(SpicerError, ValueError):
    """Formas incompatíveis entre operandos"""


# =================== Calibração ===================

class AcsError(SpicerError, ValueError):
    """Região ACS ausente, vazia ou nula"""


class CalibrationError(SpicerError, ValueError):
    """Falha na calibração (RSS nulo dentro do FOV, ACS insuficiente para o kernel)"""


# =================== Numérico ===================

class NumericError(SpicerError, ArithmeticError):
    """Valores não finitos em perdas ou gradientes"""


class StaleTapeError(SpicerError, RuntimeError):
    """Fita/trace usado com parâmetros diferentes dos da passada direta"""


class MetricError(SpicerError, ValueError):
    """Referência nula ou regiões vazias na avaliação"""


# =================== Arquivos ===================

class FileFormatError(SpicerError, IOError):
    """Arquivo com magic ou cabeçalho inválido"""


class VersionError(FileFormatError):
    """Versão de formato desconhecida"""


class ChecksumError(FileFormatError):
    """CRC divergente ou arquivo truncado"""


# Códigos de saída da CLI
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def exit_code_for(error: BaseException) -> int:
    """Mapeia uma exceção para o código de saída da CLI"""
    if isinstance(error, (ConfigError, ShapeError)):
        return EXIT_CONFIG
    if isinstance(error, (FileFormatError, OSError)):
        return EXIT_IO
    if isinstance(error, (NumericError, AcsError, CalibrationError, StaleTapeError, MetricError)):
        return EXIT_NUMERIC
    return 1
