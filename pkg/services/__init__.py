"""
Services package for the imbalanced multilingual news classification toolkit
Contains corpus loading, feature extraction, imbalance countermeasures, the classifier, training and reporting
"""
