from .base import Seq2SeqBackbone, load_backbone
from .tiny import TinySeq2Seq


def make_backbone(spec: str = "tiny", seed: int = 0, **kwargs) -> Seq2SeqBackbone:
    """``"tiny"`` builds a :class:`TinySeq2Seq`; anything else is a Hugging Face model name."""
    if spec == "tiny":
        return TinySeq2Seq(seed=seed, **kwargs)
    from .hf import HFSeq2Seq

    return HFSeq2Seq.from_pretrained(spec, **kwargs)


__all__ = ["Seq2SeqBackbone", "TinySeq2Seq", "load_backbone", "make_backbone"]
