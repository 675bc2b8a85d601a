/// The callbacks file of one experiment. Rewrites replace it whole; every
/// version is kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallbacksFile {
    versions: Vec<String>,
}

impl CallbacksFile {
    pub fn new(initial: Option<String>) -> Self {
        CallbacksFile {
            versions: initial.into_iter().collect(),
        }
    }

    pub fn current(&self) -> Option<&str> {
        self.versions.last().map(String::as_str)
    }

    /// Replaces the file; blank text is rejected and leaves it unchanged.
    pub fn update(&mut self, new_text: &str) -> Result<&str, &'static str> {
        if new_text.trim().is_empty() {
            return Err("callbacks rewrite is empty");
        }
        self.versions.push(new_text.to_string());
        Ok(self.versions.last().expect("just pushed"))
    }

    /// All versions, oldest first.
    pub fn history(&self) -> &[String] {
        &self.versions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewrites_keep_history() {
        let mut cb = CallbacksFile::new(None);
        assert_eq!(cb.current(), None);
        cb.update("class Callbacks:\n    pass\n").unwrap();
        cb.update("class Callbacks:\n    x = 1\n").unwrap();
        assert!(cb.update("  ").is_err());
        assert_eq!(cb.history().len(), 2);
        assert_eq!(cb.current(), Some("class Callbacks:\n    x = 1\n"));
    }
}
