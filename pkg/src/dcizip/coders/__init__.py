from .arithmetic import (FLUSH_BITS, P_MIN, ArithmeticDecoder, ArithmeticEncoder, decode_bits,
                         encode_bits, ideal_length, quantize)
from .frame import METHODS, CompressedFrame
from .huffman import ESCAPE, HuffmanCodebook, HuffmanCoder, canonical_codes, huffman_build, huffman_code_lengths

__all__ = [
    "FLUSH_BITS", "P_MIN", "ArithmeticDecoder", "ArithmeticEncoder", "decode_bits", "encode_bits",
    "ideal_length", "quantize", "METHODS", "CompressedFrame", "ESCAPE", "HuffmanCodebook", "HuffmanCoder",
    "canonical_codes", "huffman_build", "huffman_code_lengths",
]
