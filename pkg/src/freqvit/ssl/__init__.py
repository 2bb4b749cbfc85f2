"""Student-teacher self-distillation on a tiny ViT."""
