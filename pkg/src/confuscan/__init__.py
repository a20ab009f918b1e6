"""confuscan: package-confusion (typosquatting) detection and evaluation."""

__version__ = "0.1.0"
