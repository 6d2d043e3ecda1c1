"""Semiclassical magnetic spectra: band functions, WKB predictions, sparse solvers, studies."""
