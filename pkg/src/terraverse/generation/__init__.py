"""Environment generators and the co-evolution driver."""
