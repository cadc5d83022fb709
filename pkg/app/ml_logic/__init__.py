"""
Agent models, belief planning and Bayesian inference over agent hypotheses.
"""
