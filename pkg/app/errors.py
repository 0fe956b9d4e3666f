#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Error types shared by the simulator, the pipeline and the CLI
"""

from typing import Dict


class ChainFLError(Exception):
    """Base error; `category` drives pipeline error state and CLI exit codes"""

    category = "ERROR"

    def __init__(self, message: str, **context):
        self.message = message
        self.context = context
        super().__init__(self.__str__())

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class ConfigurationError(ChainFLError):
    category = "CONFIG"


class ShapeError(ChainFLError):
    category = "SHAPE"


class ProtocolError(ChainFLError):
    category = "PROTOCOL"


class InputError(ChainFLError):
    category = "INPUT"


class DataFormatError(ChainFLError):
    category = "FORMAT"


class CapabilityError(ChainFLError):
    category = "CAPABILITY"


class NumericalError(ChainFLError):
    category = "NUMERIC"


class ReportIOError(ChainFLError):
    category = "IO"


EXIT_CODES: Dict[str, int] = {
    "CONFIG": 2,
    "FORMAT": 3,
    "PROTOCOL": 4,
    "SHAPE": 4,
    "CAPABILITY": 4,
    "IO": 5,
    "NUMERIC": 7,
    "INPUT": 6,
}


def exit_code_for(category: str) -> int:
    """Map an error category to a process exit code"""
    return EXIT_CODES.get(category, 1)


def error_for_category(category: str, message: str) -> ChainFLError:
    """Rebuild a typed error from a category recorded in pipeline state"""
    for cls in ChainFLError.__subclasses__():
        if cls.category == category:
            return cls(message)
    error = ChainFLError(message)
    error.category = category
    return error
