# Data components
