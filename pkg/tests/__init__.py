# MIT License
# Copyright (c) 2024-present Léo Colombaro

"""Tests for sketchattn package."""
