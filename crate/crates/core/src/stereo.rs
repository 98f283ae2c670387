/// A left/right view pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StereoPair<T> {
    pub left: T,
    pub right: T,
}

impl<T> StereoPair<T> {
    pub fn new(left: T, right: T) -> Self {
        Self { left, right }
    }

    pub fn as_ref(&self) -> StereoPair<&T> {
        StereoPair::new(&self.left, &self.right)
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> StereoPair<U> {
        StereoPair::new(f(self.left), f(self.right))
    }

    pub fn try_map<U, E>(self, mut f: impl FnMut(T) -> Result<U, E>) -> Result<StereoPair<U>, E> {
        Ok(StereoPair::new(f(self.left)?, f(self.right)?))
    }

    /// Exchanges the two views.
    pub fn swap(self) -> Self {
        Self::new(self.right, self.left)
    }
}
