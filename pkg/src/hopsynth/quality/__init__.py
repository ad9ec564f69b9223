"""Three-dimensional quality system: judge scoring with reliability
statistics, answerability/difficulty diagnostics, and the evidence
retrieval audit."""
