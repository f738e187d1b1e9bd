#!/usr/bin/env python3
"""Independent model of the simulator's loss stream.

Per-link generator: mt19937_64 seeded with substream_seed(root, (src<<32)|dst),
where substream_seed(root, id) = mix(mix(root) ^ id) and mix is the SplitMix64
finalizer. A send is dropped iff ((draw >> 11) * 2^-53) < loss_prob.
"""
M64 = (1 << 64) - 1


def mix(z):
    z = (z + 0x9E3779B97F4A7C15) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def substream_seed(root, ident):
    return mix(mix(root) ^ ident)


class MT19937_64:
    NN, MM = 312, 156
    MATRIX_A = 0xB5026F5AA96619E9
    UM, LM = 0xFFFFFFFF80000000, 0x7FFFFFFF

    def __init__(self, seed):
        self.mt = [0] * self.NN
        self.mt[0] = seed & M64
        for i in range(1, self.NN):
            self.mt[i] = (6364136223846793005 * (self.mt[i - 1] ^ (self.mt[i - 1] >> 62)) + i) & M64
        self.mti = self.NN

    def next(self):
        if self.mti >= self.NN:
            for i in range(self.NN):
                x = (self.mt[i] & self.UM) | (self.mt[(i + 1) % self.NN] & self.LM)
                xa = x >> 1
                if x & 1:
                    xa ^= self.MATRIX_A
                self.mt[i] = self.mt[(i + self.MM) % self.NN] ^ xa
            self.mti = 0
        x = self.mt[self.mti]
        self.mti += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & M64


g = MT19937_64(5489)
for _ in range(9999):
    g.next()
assert g.next() == 9981545732273789042  # [rand.predef] check value

def drops(root, src, dst, n, loss):
    g = MT19937_64(substream_seed(root, (src << 32) | dst))
    return sum(1 for _ in range(n) if (g.next() >> 11) * 2.0 ** -53 < loss)

print("seed42 link 0->1 1000 sends loss 0.3 drops:", drops(42, 0, 1, 1000, 0.3))
print("seed42 link 1->0 1000 sends loss 0.3 drops:", drops(42, 1, 0, 1000, 0.3))
print("substream_seed(42, 1) =", substream_seed(42, 1))
