from .layer import Linear, LayerNorm, Embedding, CausalSelfAttention, FeedForward, TransformerBlock
from .lora import LoRALinear, apply_lora_to_linear_modules

__all__ = [
    'Linear', 'LayerNorm', 'Embedding', 'CausalSelfAttention', 'FeedForward', 'TransformerBlock',
    'LoRALinear', 'apply_lora_to_linear_modules'
]
