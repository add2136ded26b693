/// Fixed-capacity FIFO buffer.
pub struct RingBuf<T> {
    items: Vec<T>,
    cap: usize,
}

impl<T> RingBuf<T> {
    pub fn new(cap: usize) -> Self {
        RingBuf { items: Vec::with_capacity(cap), cap }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        assert!(self.items.len() < self.cap, "ring buffer full");
        self.items.push(item);
    }

    pub fn pop(&mut self) -> Option<T> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items.remove(0))
        }
    }
}
