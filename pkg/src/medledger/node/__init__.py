"""Runnable node: live transport, HTTP API, and the command-line interface."""
