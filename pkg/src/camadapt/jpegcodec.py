"""Self-contained baseline JFIF codec.

Baseline sequential JPEG: BT.601 full-range YCbCr, 4:2:0 subsampling (2x2
box average down, nearest-neighbor up), 8x8 DCT, quality-scaled Annex-K
quantization tables, the standard Huffman tables, no restart intervals.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy.fft import dctn, idctn


class JpegError(Exception):
    pass


# Annex-K base quantization tables (natural order).
BASE_LUMA_QT = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99], dtype=np.int32).reshape(8, 8)

BASE_CHROMA_QT = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99], dtype=np.int32).reshape(8, 8)

ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63])

# Standard Huffman table definitions (bits per code length, then symbols).
DC_LUMA_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
DC_LUMA_VALS = list(range(12))
DC_CHROMA_BITS = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
DC_CHROMA_VALS = list(range(12))

AC_LUMA_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D]
AC_LUMA_VALS = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12,
    0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16,
    0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
    0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98,
    0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4,
    0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA,
    0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA]

AC_CHROMA_BITS = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77]
AC_CHROMA_VALS = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21,
    0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
    0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34,
    0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38,
    0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
    0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78,
    0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96,
    0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4,
    0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2,
    0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9,
    0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA]


def quality_to_qtables(cl: int):
    """IJG quality scaling of the Annex-K base tables."""
    if not 1 <= cl <= 100:
        raise JpegError(f"compression level must be in [1, 100], got {cl}")
    scale = 5000 // cl if cl < 50 else 200 - 2 * cl
    luma = np.clip((BASE_LUMA_QT * scale + 50) // 100, 1, 255).astype(np.int32)
    chroma = np.clip((BASE_CHROMA_QT * scale + 50) // 100, 1, 255).astype(np.int32)
    return luma, chroma


def _build_codes(bits, vals):
    """Canonical Huffman: symbol -> (code, length)."""
    codes = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[vals[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


def _rgb_to_ycbcr(rgb):
    r = rgb[..., 0].astype(np.float64)
    g = rgb[..., 1].astype(np.float64)
    b = rgb[..., 2].astype(np.float64)
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b
    return y, cb, cr


def _ycbcr_to_rgb(y, cb, cr):
    # 16.16 fixed-point BT.601 conversion (same rounding as common decoders)
    y = y.astype(np.int64)
    cb = cb.astype(np.int64) - 128
    cr = cr.astype(np.int64) - 128
    half = 1 << 15

    def fix(x):
        return int(round(x * 65536))

    r = y + ((fix(1.40200) * cr + half) >> 16)
    g = y + ((-fix(0.34414) * cb - fix(0.71414) * cr + half) >> 16)
    b = y + ((fix(1.77200) * cb + half) >> 16)
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(rgb, 0, 255).astype(np.uint8)


def _blockify(plane):
    """(H, W) with H, W multiples of 8 -> (n_blocks, 8, 8) in raster order."""
    h, w = plane.shape
    return (plane.reshape(h // 8, 8, w // 8, 8)
            .transpose(0, 2, 1, 3)
            .reshape(-1, 8, 8))


def _unblockify(blocks, h, w):
    return (blocks.reshape(h // 8, w // 8, 8, 8)
            .transpose(0, 2, 1, 3)
            .reshape(h, w))


class _BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, code, length):
        self.acc = (self.acc << length) | (code & ((1 << length) - 1))
        self.nbits += length
        while self.nbits >= 8:
            byte = (self.acc >> (self.nbits - 8)) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
            self.nbits -= 8
        self.acc &= (1 << self.nbits) - 1

    def flush(self):
        if self.nbits:
            self.write(0x7F, 8 - self.nbits)  # pad with 1-bits


def _magnitude(v):
    """(category, additional bits) for a DC difference or AC coefficient."""
    if v == 0:
        return 0, 0
    a = abs(v)
    cat = a.bit_length()
    bits = v if v > 0 else v + (1 << cat) - 1
    return cat, bits


def _encode_block(writer, coeffs_zz, prev_dc, dc_codes, ac_codes):
    diff = int(coeffs_zz[0]) - prev_dc
    cat, bits = _magnitude(diff)
    code, length = dc_codes[cat]
    writer.write(code, length)
    if cat:
        writer.write(bits, cat)

    nz = np.nonzero(coeffs_zz[1:])[0]
    last = nz[-1] + 1 if nz.size else 0
    run = 0
    for k in range(1, last + 1):
        v = int(coeffs_zz[k])
        if v == 0:
            run += 1
            continue
        while run > 15:
            code, length = ac_codes[0xF0]  # ZRL
            writer.write(code, length)
            run -= 16
        cat, bits = _magnitude(v)
        code, length = ac_codes[(run << 4) | cat]
        writer.write(code, length)
        writer.write(bits, cat)
        run = 0
    if last < 63:
        code, length = ac_codes[0x00]  # EOB
        writer.write(code, length)
    return int(coeffs_zz[0])


def _pad_to_multiple(plane, mult):
    h, w = plane.shape
    ph = (-h) % mult
    pw = (-w) % mult
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _fdct_quantize(plane, qt):
    blocks = _blockify(plane) - 128.0
    coeffs = dctn(blocks, type=2, norm="ortho", axes=(1, 2))
    q = np.round(coeffs / qt).astype(np.int32)
    return q.reshape(-1, 64)[:, ZIGZAG]


def encode(pixels: np.ndarray, cl: int) -> bytes:
    """Encode an (H, W, 3) uint8 RGB image as a baseline JFIF stream."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise JpegError(f"expected (H, W, 3) RGB array, got shape {pixels.shape}")
    h, w = pixels.shape[:2]
    if h < 1 or w < 1:
        raise JpegError("image dimensions must be positive")
    luma_qt, chroma_qt = quality_to_qtables(cl)

    y, cb, cr = _rgb_to_ycbcr(pixels)
    y = _pad_to_multiple(y, 16)
    cb = _pad_to_multiple(cb, 16)
    cr = _pad_to_multiple(cr, 16)
    # 4:2:0 by 2x2 box average
    cb = cb.reshape(cb.shape[0] // 2, 2, cb.shape[1] // 2, 2).mean(axis=(1, 3))
    cr = cr.reshape(cr.shape[0] // 2, 2, cr.shape[1] // 2, 2).mean(axis=(1, 3))

    yzz = _fdct_quantize(y, luma_qt)
    cbzz = _fdct_quantize(cb, chroma_qt)
    crzz = _fdct_quantize(cr, chroma_qt)

    dc_l = _build_codes(DC_LUMA_BITS, DC_LUMA_VALS)
    ac_l = _build_codes(AC_LUMA_BITS, AC_LUMA_VALS)
    dc_c = _build_codes(DC_CHROMA_BITS, DC_CHROMA_VALS)
    ac_c = _build_codes(AC_CHROMA_BITS, AC_CHROMA_VALS)

    writer = _BitWriter()
    ymcu_w = y.shape[1] // 16
    blocks_per_row = y.shape[1] // 8
    prev = {"y": 0, "cb": 0, "cr": 0}
    for my in range(y.shape[0] // 16):
        for mx in range(ymcu_w):
            for by, bx in ((0, 0), (0, 1), (1, 0), (1, 1)):
                idx = (2 * my + by) * blocks_per_row + 2 * mx + bx
                prev["y"] = _encode_block(writer, yzz[idx], prev["y"], dc_l, ac_l)
            cidx = my * (cb.shape[1] // 8) + mx
            prev["cb"] = _encode_block(writer, cbzz[cidx], prev["cb"], dc_c, ac_c)
            prev["cr"] = _encode_block(writer, crzz[cidx], prev["cr"], dc_c, ac_c)
    writer.flush()

    return _assemble_stream(h, w, luma_qt, chroma_qt, bytes(writer.out))


def _dqt_segment(table_id, qt):
    return struct.pack("B", table_id) + bytes(int(v) for v in qt.reshape(-1)[ZIGZAG])


def _dht_segment(table_class, table_id, bits, vals):
    return (struct.pack("B", (table_class << 4) | table_id)
            + bytes(bits) + bytes(vals))


def _segment(marker, payload):
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _assemble_stream(h, w, luma_qt, chroma_qt, scan_data):
    out = bytearray(b"\xff\xd8")  # SOI
    out += _segment(0xE0, b"JFIF\x00" + struct.pack(">BBBHHBB", 1, 1, 0, 1, 1, 0, 0))
    out += _segment(0xDB, _dqt_segment(0, luma_qt) + _dqt_segment(1, chroma_qt))
    # SOF0: 8-bit precision, 3 components, Y at 2x2 sampling, Cb/Cr at 1x1
    sof = struct.pack(">BHHB", 8, h, w, 3)
    sof += struct.pack("BBB", 1, 0x22, 0)
    sof += struct.pack("BBB", 2, 0x11, 1)
    sof += struct.pack("BBB", 3, 0x11, 1)
    out += _segment(0xC0, sof)
    out += _segment(0xC4, _dht_segment(0, 0, DC_LUMA_BITS, DC_LUMA_VALS)
                    + _dht_segment(1, 0, AC_LUMA_BITS, AC_LUMA_VALS)
                    + _dht_segment(0, 1, DC_CHROMA_BITS, DC_CHROMA_VALS)
                    + _dht_segment(1, 1, AC_CHROMA_BITS, AC_CHROMA_VALS))
    sos = struct.pack("B", 3)
    sos += struct.pack("BB", 1, 0x00)
    sos += struct.pack("BB", 2, 0x11)
    sos += struct.pack("BB", 3, 0x11)
    sos += struct.pack("BBB", 0, 63, 0)
    out += _segment(0xDA, sos)
    out += scan_data
    out += b"\xff\xd9"  # EOI
    return bytes(out)


# ---------------------------------------------------------------------------
# decoder


class _BitReader:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.acc = 0
        self.nbits = 0

    def _fill(self):
        if self.pos >= len(self.data):
            raise JpegError("ran out of entropy-coded data")
        byte = self.data[self.pos]
        self.pos += 1
        if byte == 0xFF:
            if self.pos >= len(self.data):
                raise JpegError("truncated byte stuffing")
            marker = self.data[self.pos]
            if marker == 0x00:
                self.pos += 1
            else:
                raise JpegError(f"unexpected marker 0xFF{marker:02X} inside scan")
        self.acc = (self.acc << 8) | byte
        self.nbits += 8

    def read_bit(self):
        if self.nbits == 0:
            self._fill()
        self.nbits -= 1
        return (self.acc >> self.nbits) & 1

    def read_bits(self, n):
        v = 0
        for _ in range(n):
            v = (v << 1) | self.read_bit()
        return v


def _build_decode_table(bits, vals):
    table = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            table[(length, code)] = vals[k]
            code += 1
            k += 1
        code <<= 1
    return table


def _decode_symbol(reader, table):
    code = 0
    for length in range(1, 17):
        code = (code << 1) | reader.read_bit()
        sym = table.get((length, code))
        if sym is not None:
            return sym
    raise JpegError("invalid Huffman code in scan data")


def _extend(bits, cat):
    if cat == 0:
        return 0
    if bits < (1 << (cat - 1)):
        return bits - (1 << cat) + 1
    return bits


def _decode_block(reader, dc_table, ac_table, prev_dc):
    zz = np.zeros(64, dtype=np.int32)
    cat = _decode_symbol(reader, dc_table)
    dc = prev_dc + _extend(reader.read_bits(cat), cat)
    zz[0] = dc
    k = 1
    while k < 64:
        sym = _decode_symbol(reader, ac_table)
        if sym == 0x00:  # EOB
            break
        run, cat = sym >> 4, sym & 0x0F
        if cat == 0:
            if run != 15:
                raise JpegError(f"bad AC symbol 0x{sym:02X}")
            k += 16
            continue
        k += run
        if k > 63:
            raise JpegError("AC run overflows block")
        zz[k] = _extend(reader.read_bits(cat), cat)
        k += 1
    return zz, dc


class _StreamParser:
    """Pulls marker segments out of a JFIF byte stream."""

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def expect_soi(self):
        if self.data[:2] != b"\xff\xd8":
            raise JpegError("missing SOI marker")
        self.pos = 2

    def next_marker(self):
        d = self.data
        while self.pos < len(d) - 1:
            if d[self.pos] == 0xFF and d[self.pos + 1] not in (0x00, 0xFF):
                marker = d[self.pos + 1]
                self.pos += 2
                return marker
            self.pos += 1
        raise JpegError("unexpected end of stream while scanning for marker")

    def read_segment(self):
        (length,) = struct.unpack_from(">H", self.data, self.pos)
        payload = self.data[self.pos + 2:self.pos + length]
        if len(payload) != length - 2:
            raise JpegError("truncated marker segment")
        self.pos += length
        return payload


def decode(stream: bytes) -> np.ndarray:
    """Decode a baseline 4:2:0 or 4:4:4 JFIF stream to (H, W, 3) uint8 RGB."""
    parser = _StreamParser(bytes(stream))
    parser.expect_soi()
    if not stream.endswith(b"\xff\xd9"):
        raise JpegError("missing EOI marker")

    qtables = {}
    dc_tables = {}
    ac_tables = {}
    frame = None
    scan = None
    while True:
        marker = parser.next_marker()
        if marker == 0xD9:
            raise JpegError("EOI before scan data")
        payload = parser.read_segment()
        if marker == 0xDB:
            off = 0
            while off < len(payload):
                pq, tq = payload[off] >> 4, payload[off] & 0x0F
                if pq != 0:
                    raise JpegError("16-bit quantization tables unsupported")
                zzvals = np.frombuffer(payload, dtype=np.uint8,
                                       count=64, offset=off + 1).astype(np.int32)
                qt = np.zeros(64, dtype=np.int32)
                qt[ZIGZAG] = zzvals
                qtables[tq] = qt.reshape(8, 8)
                off += 65
        elif marker == 0xC4:
            off = 0
            while off < len(payload):
                tc, th = payload[off] >> 4, payload[off] & 0x0F
                bits = list(payload[off + 1:off + 17])
                n = sum(bits)
                vals = list(payload[off + 17:off + 17 + n])
                table = _build_decode_table(bits, vals)
                (ac_tables if tc else dc_tables)[th] = table
                off += 17 + n
        elif marker == 0xC0:
            precision, h, w, ncomp = struct.unpack_from(">BHHB", payload, 0)
            if precision != 8 or ncomp != 3:
                raise JpegError("only 8-bit 3-component baseline frames supported")
            comps = []
            for i in range(3):
                cid, sampling, tq = struct.unpack_from("BBB", payload, 6 + 3 * i)
                comps.append({"id": cid, "hs": sampling >> 4,
                              "vs": sampling & 0x0F, "tq": tq})
            frame = {"h": h, "w": w, "comps": comps}
        elif marker in (0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7,
                        0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
            raise JpegError(f"unsupported frame type 0xFF{marker:02X} (not baseline)")
        elif marker == 0xDD:
            if struct.unpack(">H", payload)[0] != 0:
                raise JpegError("restart intervals unsupported")
        elif marker == 0xDA:
            ns = payload[0]
            scan = []
            for i in range(ns):
                cs, tables = struct.unpack_from("BB", payload, 1 + 2 * i)
                scan.append({"id": cs, "dc": tables >> 4, "ac": tables & 0x0F})
            break
        # APPn / COM / others: skipped

    if frame is None or scan is None:
        raise JpegError("stream has no frame/scan headers")
    sampling = tuple((c["hs"], c["vs"]) for c in frame["comps"])
    if sampling not in (((2, 2), (1, 1), (1, 1)), ((1, 1), (1, 1), (1, 1))):
        raise JpegError(f"unsupported sampling layout {sampling}")
    subsampled = sampling[0] == (2, 2)

    reader = _BitReader(parser.data[parser.pos:])
    h, w = frame["h"], frame["w"]
    mcu = 16 if subsampled else 8
    mcus_x = (w + mcu - 1) // mcu
    mcus_y = (h + mcu - 1) // mcu
    yh, yw = mcus_y * mcu, mcus_x * mcu
    ch, cw = (yh // 2, yw // 2) if subsampled else (yh, yw)

    comp_by_id = {c["id"]: c for c in frame["comps"]}
    planes = {}
    zz_store = {0: [], 1: [], 2: []}
    prev_dc = [0, 0, 0]
    n_yblocks = 4 if subsampled else 1
    for _ in range(mcus_x * mcus_y):
        for ci, sc in enumerate(scan):
            reps = n_yblocks if ci == 0 else 1
            for _ in range(reps):
                zz, prev_dc[ci] = _decode_block(
                    reader, dc_tables[sc["dc"]], ac_tables[sc["ac"]], prev_dc[ci])
                zz_store[ci].append(zz)

    for ci, sc in enumerate(scan):
        comp = comp_by_id[sc["id"]]
        qt = qtables[comp["tq"]]
        zz = np.stack(zz_store[ci])
        coeffs = np.zeros((zz.shape[0], 64), dtype=np.float64)
        coeffs[:, ZIGZAG] = zz
        blocks = idctn(coeffs.reshape(-1, 8, 8) * qt, type=2, norm="ortho",
                       axes=(1, 2)) + 128.0
        blocks = np.clip(np.floor(blocks + 0.5), 0, 255)  # round half up, as reference decoders do
        ph, pw = (yh, yw) if ci == 0 else (ch, cw)
        if ci == 0 and subsampled:
            # MCU-interleaved Y blocks -> raster order
            plane = np.zeros((yh, yw))
            k = 0
            for my in range(mcus_y):
                for mx in range(mcus_x):
                    for by, bx in ((0, 0), (0, 1), (1, 0), (1, 1)):
                        plane[16 * my + 8 * by:16 * my + 8 * by + 8,
                              16 * mx + 8 * bx:16 * mx + 8 * bx + 8] = blocks[k]
                        k += 1
        else:
            plane = _unblockify(blocks, ph, pw)
        planes[ci] = plane

    y = planes[0][:h, :w]
    cb, cr = planes[1], planes[2]
    if subsampled:
        cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1)
        cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1)
    cb = cb[:h, :w]
    cr = cr[:h, :w]
    return _ycbcr_to_rgb(y, cb, cr)
