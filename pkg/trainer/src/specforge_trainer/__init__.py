"""specforge-trainer: parameter-efficient fine-tuning for the training files
exported by the specforge pipeline ({instruction, input, output} JSON-lines).
"""

__version__ = "0.1.0"
