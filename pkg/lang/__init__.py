"""Coordinate expression language: lexer, parser and tree walkers."""
