# Network components
