"""
Estimators - From-scratch discriminants over measurement vectors
"""

from app.estimators.base import BAD, GOOD, MeasurementClassifier
from app.estimators.discriminant import LinearDiscriminant, QuadraticDiscriminant
from app.estimators.logistic import LogisticRegression
from app.estimators.smashed_filter import SmashedFilter
from app.estimators.svm import SupportVectorMachine

__all__ = [
    "BAD",
    "GOOD",
    "LinearDiscriminant",
    "LogisticRegression",
    "MeasurementClassifier",
    "QuadraticDiscriminant",
    "SmashedFilter",
    "SupportVectorMachine",
]
