"""Experiment Services"""
