//! Host-side reference models for the benchmark programs.
//!
//! Each model mirrors the bytecode's 16/32-bit wrapping arithmetic
//! exactly, so expected outputs can be compared bit-for-bit against the
//! interpreter (and, transitively, the simulator).

/// Sorted copy of a 16-bit array (expected result of both sorts).
pub fn sorted(a: &[i32]) -> Vec<i32> {
    let mut v: Vec<i16> = a.iter().map(|x| *x as i16).collect();
    v.sort_unstable();
    v.into_iter().map(|x| x as i32).collect()
}

/// Lower-bound binary search replica: index of the first occurrence of
/// each key, or -1 when absent.
pub fn bsearch(a: &[i32], keys: &[i32]) -> Vec<i32> {
    keys.iter()
        .map(|key| {
            let key = *key as i16;
            let mut lo = 0i16;
            let mut hi = a.len() as i16 - 1;
            while lo < hi {
                let mid = (lo + hi) >> 1;
                if (a[mid as usize] as i16) < key {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            if a[lo as usize] as i16 == key {
                lo as i32
            } else {
                -1
            }
        })
        .collect()
}

/// Q15 multiply with the bytecode's exact truncation:
/// `i2s((a32 * b32) >> 15)`.
fn mq(a: i16, b: i16) -> i16 {
    ((a as i32 * b as i32) >> 15) as i16
}

/// 64-point fixed-point FFT replica (per-stage 1/2 scaling).
pub fn fft64(
    re_in: &[i32],
    im_in: &[i32],
    cos: &[i32],
    sin: &[i32],
    brev: &[i32],
) -> (Vec<i32>, Vec<i32>) {
    let mut re: Vec<i16> = re_in.iter().map(|x| *x as i16).collect();
    let mut im: Vec<i16> = im_in.iter().map(|x| *x as i16).collect();
    for i in 0..64 {
        let j = brev[i] as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut l = 1usize;
    let mut tstep = 32usize;
    while l < 64 {
        for m in 0..l {
            let w = m * tstep;
            let (c, s) = (cos[w] as i16, sin[w] as i16);
            let mut i = m;
            while i < 64 {
                let j = i + l;
                let tr2 = mq(c, re[j]).wrapping_add(mq(s, im[j])) >> 1;
                let ti2 = mq(c, im[j]).wrapping_sub(mq(s, re[j])) >> 1;
                let (qr, qi) = (re[i] >> 1, im[i] >> 1);
                re[j] = qr.wrapping_sub(tr2);
                im[j] = qi.wrapping_sub(ti2);
                re[i] = qr.wrapping_add(tr2);
                im[i] = qi.wrapping_add(ti2);
                i += 2 * l;
            }
        }
        l <<= 1;
        tstep >>= 1;
    }
    (
        re.into_iter().map(|x| x as i32).collect(),
        im.into_iter().map(|x| x as i32).collect(),
    )
}

/// XXTEA encryption, 8-word block, fixed 12 rounds.
pub fn xxtea(v_in: &[i32], key: &[i32]) -> Vec<i32> {
    const DELTA: u32 = 0x9e37_79b9;
    let mut v: Vec<u32> = v_in.iter().map(|x| *x as u32).collect();
    let k: Vec<u32> = key.iter().map(|x| *x as u32).collect();
    let n = v.len();
    let mx = |sum: u32, y: u32, z: u32, p: usize, e: u32, k: &[u32]| {
        (((z >> 5) ^ (y << 2)).wrapping_add((y >> 3) ^ (z << 4)))
            ^ ((sum ^ y).wrapping_add(k[(p & 3) ^ e as usize] ^ z))
    };
    let mut sum = 0u32;
    let mut z = v[n - 1];
    for _ in 0..12 {
        sum = sum.wrapping_add(DELTA);
        let e = (sum >> 2) & 3;
        for p in 0..n - 1 {
            let y = v[p + 1];
            v[p] = v[p].wrapping_add(mx(sum, y, z, p, e, &k));
            z = v[p];
        }
        let y = v[0];
        v[n - 1] = v[n - 1].wrapping_add(mx(sum, y, z, n - 1, e, &k));
        z = v[n - 1];
    }
    v.into_iter().map(|x| x as i32).collect()
}

/// MD5 compression of one block with externally supplied K and S tables.
pub fn md5(m: &[i32], kt: &[i32], st: &[i32]) -> Vec<i32> {
    const INIT: [u32; 4] = [0x6745_2301, 0xefcd_ab89, 0x98ba_dcfe, 0x1032_5476];
    let m: Vec<u32> = m.iter().map(|x| *x as u32).collect();
    let (mut a, mut b, mut c, mut d) = (INIT[0], INIT[1], INIT[2], INIT[3]);
    for i in 0..64usize {
        let (f, g) = match i / 16 {
            0 => ((b & c) | (!b & d), i),
            1 => ((d & b) | (!d & c), (5 * i + 1) & 15),
            2 => (b ^ c ^ d, (3 * i + 5) & 15),
            _ => (c ^ (b | !d), (7 * i) & 15),
        };
        let f = f
            .wrapping_add(a)
            .wrapping_add(kt[i] as u32)
            .wrapping_add(m[g]);
        a = d;
        d = c;
        c = b;
        b = b.wrapping_add(f.rotate_left(st[i] as u32));
    }
    vec![
        a.wrapping_add(INIT[0]) as i32,
        b.wrapping_add(INIT[1]) as i32,
        c.wrapping_add(INIT[2]) as i32,
        d.wrapping_add(INIT[3]) as i32,
    ]
}

/// RC5-32/12 encryption over consecutive (A, B) word pairs.
pub fn rc5(s: &[i32], data: &[i32]) -> Vec<i32> {
    let s: Vec<u32> = s.iter().map(|x| *x as u32).collect();
    let mut out = Vec::with_capacity(data.len());
    for blk in data.chunks(2) {
        let mut a = (blk[0] as u32).wrapping_add(s[0]);
        let mut b = (blk[1] as u32).wrapping_add(s[1]);
        for r in 1..=12usize {
            a = (a ^ b).rotate_left(b & 31).wrapping_add(s[2 * r]);
            b = (b ^ a).rotate_left(a & 31).wrapping_add(s[2 * r + 1]);
        }
        out.push(a as i32);
        out.push(b as i32);
    }
    out
}
