"""Secrecy Analysis Modules"""
