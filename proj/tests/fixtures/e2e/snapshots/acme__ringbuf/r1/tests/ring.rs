use ringbuf::RingBuf;

#[test]
fn push_then_pop() {
    let mut r = RingBuf::new(2);
    r.push(1);
    r.push(2);
    assert_eq!(r.pop(), Some(1));
    assert_eq!(r.len(), 1);
}

#[test]
fn pop_empty_is_none() {
    let mut r: RingBuf<u8> = RingBuf::new(1);
    assert!(r.is_empty());
    assert_eq!(r.pop(), None);
}
