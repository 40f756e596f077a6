# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled mining loop: seed hash, iterated stages, window checks.

Semantics must match pipeline.run_attempts_python exactly; the parity tests
sweep both over identical plans. Uses OpenSSL's legacy SHA256_* interface —
the one-shot EVP path pays a per-call provider lookup that dwarfs the hash
itself at this call rate.
"""

from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memcmp, memcpy

cdef extern from "openssl/sha.h":
    ctypedef struct SHA256_CTX:
        pass
    int SHA256_Init(SHA256_CTX *c) nogil
    int SHA256_Update(SHA256_CTX *c, const void *data, size_t length) nogil
    int SHA256_Final(unsigned char *md, SHA256_CTX *c) nogil


cdef inline void _sha256(const unsigned char *data, size_t n,
                         unsigned char *out) nogil:
    cdef SHA256_CTX ctx
    SHA256_Init(&ctx)
    SHA256_Update(&ctx, data, n)
    SHA256_Final(out, &ctx)


cdef inline int _window_match(const unsigned char *d, int f, int t,
                              const unsigned char *target) nogil:
    """Compare digest bits [f, t) (MSB-first) against packed target bits."""
    cdef int width = t - f
    cdef int nfull, rem, pos, i, out_i
    cdef unsigned char acc, mask
    if (f & 7) == 0:
        nfull = width >> 3
        if nfull and memcmp(d + (f >> 3), target, nfull) != 0:
            return 0
        rem = width & 7
        if rem:
            mask = <unsigned char> (0xFF << (8 - rem))
            if (d[(f >> 3) + nfull] ^ target[nfull]) & mask:
                return 0
        return 1
    pos = f
    out_i = 0
    while pos < t:
        acc = 0
        for i in range(8):
            if pos < t:
                acc |= ((d[pos >> 3] >> (7 - (pos & 7))) & 1) << (7 - i)
                pos += 1
        if acc != target[out_i]:
            return 0
        out_i += 1
    return 1


def run_attempts(bytes header, bytes threshold, bytes prefix,
                 unsigned long long start, long long count,
                 long long[::1] reps, int[::1] win_from, int[::1] win_to,
                 bytes targets, int[::1] target_off,
                 bint coupled, bint stop_on_block):
    """Sweep ``count`` nonces; returns (attempts, blocks, solves)."""
    if len(prefix) != 24:
        raise ValueError("nonce prefix must be 24 bytes")
    if len(threshold) != 32:
        raise ValueError("threshold must be 32 bytes")
    cdef int n = reps.shape[0]
    if n == 0:
        raise ValueError("plan has no stages")
    cdef const unsigned char *hdr = header
    cdef size_t hdr_len = len(header)
    cdef const unsigned char *thr = threshold
    cdef const unsigned char *tgt = targets

    cdef unsigned char nonce[32]
    memcpy(nonce, <const unsigned char *> prefix, 24)
    cdef unsigned char d[32]
    cdef SHA256_CTX ctx

    cdef size_t sol_cap = 256, blk_cap = 256
    cdef long long *sol = <long long *> malloc(sol_cap * 2 * sizeof(long long))
    cdef long long *blk = <long long *> malloc(blk_cap * sizeof(long long))
    if sol == NULL or blk == NULL:
        free(sol)
        free(blk)
        raise MemoryError()
    cdef size_t sol_n = 0, blk_n = 0
    cdef long long *tmp

    cdef long long i, attempts = 0
    cdef unsigned long long ctr
    cdef int s, solved_here, stop = 0, oom = 0
    cdef long long k

    with nogil:
        for i in range(count):
            ctr = start + <unsigned long long> i
            nonce[24] = <unsigned char> (ctr >> 56)
            nonce[25] = <unsigned char> (ctr >> 48)
            nonce[26] = <unsigned char> (ctr >> 40)
            nonce[27] = <unsigned char> (ctr >> 32)
            nonce[28] = <unsigned char> (ctr >> 24)
            nonce[29] = <unsigned char> (ctr >> 16)
            nonce[30] = <unsigned char> (ctr >> 8)
            nonce[31] = <unsigned char> ctr
            SHA256_Init(&ctx)
            SHA256_Update(&ctx, hdr, hdr_len)
            SHA256_Update(&ctx, nonce, 32)
            SHA256_Final(d, &ctx)
            solved_here = 0
            for s in range(n):
                for k in range(reps[s]):
                    _sha256(d, 32, d)
                if _window_match(d, win_from[s], win_to[s],
                                 tgt + target_off[s]):
                    if sol_n == sol_cap:
                        tmp = <long long *> realloc(
                            sol, sol_cap * 4 * sizeof(long long))
                        if tmp == NULL:
                            oom = 1
                            break
                        sol = tmp
                        sol_cap *= 2
                    sol[2 * sol_n] = i
                    sol[2 * sol_n + 1] = s
                    sol_n += 1
                    solved_here = 1
            if oom:
                break
            attempts = i + 1
            if memcmp(d, thr, 32) <= 0 or (coupled and solved_here):
                if blk_n == blk_cap:
                    tmp = <long long *> realloc(
                        blk, blk_cap * 2 * sizeof(long long))
                    if tmp == NULL:
                        oom = 1
                        break
                    blk = tmp
                    blk_cap *= 2
                blk[blk_n] = i
                blk_n += 1
                if stop_on_block:
                    stop = 1
                    break
        if not stop and not oom:
            attempts = count

    try:
        if oom:
            raise MemoryError()
        solves = [(sol[2 * j], <int> sol[2 * j + 1]) for j in range(sol_n)]
        blocks = [blk[j] for j in range(blk_n)]
        return attempts, blocks, solves
    finally:
        free(sol)
        free(blk)
