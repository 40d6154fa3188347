"""Circuit-QED design pipeline for a SQUID qubit coupled to a CPW resonator and a nanomechanical beam."""

__version__ = "0.1.0"
